"""Graph-memory navigation agents on procedural worlds.

The package trains an imitation-learned agent that incrementally builds a
typed graph memory of an unseen world, plans over a pooled fixed-size
proxy graph with message passing, executes multi-step jump routes as
single decisions, and is evaluated with the standard navigation metric
set (NE/SR/SPL/OSR/PL/CLS/nDTW/SDTW).
"""

__version__ = "0.1.0"
