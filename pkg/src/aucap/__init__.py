"""aucap: desk-scale audio captioning with subject-verb semantic embeddings.

Pipeline modules: ``audio`` (WAV ingestion, log-Mel features, embedding
files), ``text`` (caption cleaning, vocabulary), ``word2vec`` (skip-gram
embeddings), ``semantics`` (subject-verb corpus and SVE vectors), ``nn``
(autodiff tensor core, GRU/BiGRU layers, Adam), ``mlp`` (SVE predictor),
``captioner`` (encoder-decoder model), ``metrics`` (BLEU/ROUGE-L/CIDEr/
METEOR), ``dataset`` (manifests and the feature cache) and ``cli``.
"""

__version__ = "0.1.0"
