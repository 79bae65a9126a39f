"""Two-layer malware detection over graph embeddings.

Layer one classifies program dependence graphs (bytecode) and function
call graphs (native) after embedding each graph into a 64-dim vector;
layer two fuses the per-layer verdicts. A gradient-sign attack module
evaluates robustness of the bytecode classifier in embedding space.
"""

__version__ = "0.1.0"
