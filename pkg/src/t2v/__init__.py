"""Text-conditioned shot sequencing toolkit.

Subpackages: numkit (gradient engine), datagen (planted corpora and file
formats), crm (retrieval embeddings), tcm (temporal coherence scorer),
engine (gallery index and beam search), evalkit (metrics and harnesses),
cli (command line front end).
"""

__version__ = "0.1.0"
