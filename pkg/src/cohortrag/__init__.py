"""Cluster-based collaborative retrieval engine for personalized RAG.

The engine pools per-user document embeddings into user vectors, groups
users into cohorts with density-based clustering, ranks intra-cohort
neighbors, retrieves profile documents through a two-stage cluster-pruned
index, assembles token-budgeted prompts, and scores generated outputs.
"""

__version__ = "0.1.0"
