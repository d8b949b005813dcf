"""Corpus analytics for three English varieties: native (N), non-native (NN)
and translated (T).

Subpackages cover the full experimental pipeline: corpus ingestion and
chunking, lexicon resources, feature extraction, an SMO-trained linear SVM
with one-vs-one multiclass and cross-validation, bisecting k-means with PCA
projection, five variety metrics with bootstrap significance tests, and
modified-Kneser-Ney POS language models with perplexity scoring and ARPA
interchange.
"""

__version__ = "0.1.0"
