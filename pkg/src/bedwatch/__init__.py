"""bedwatch: desk-scale ICU sensing pipeline.

Simulated multi-modal sensor carts stream tagged, sealed records through a
durable zero-loss queue to a server that curates, processes, scores and
visualizes them, including annotation-candidate pipelines and
multi-annotator active-learning analytics.
"""

__version__ = "0.1.0"
