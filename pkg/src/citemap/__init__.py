"""citemap: citation-importance scoring, contrastive document embeddings, and science maps.

The toolkit scores how much each cited work matters to its citing paper
(section-resolved mention counts weighted by the entropy method), samples
importance-aware triplets to train a document embedding head, builds
similarity graphs, clusters them with a from-scratch Leiden implementation,
and renders labelled topic maps with thematic overlays.
"""

__version__ = "0.1.0"

from .errors import CitemapError, MissingArtifactError, ValidationError

__all__ = ["CitemapError", "MissingArtifactError", "ValidationError", "__version__"]
