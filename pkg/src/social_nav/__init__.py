"""Multi-robot social-aware cooperative navigation stack.

A seedable pedestrian-crowd simulator, the MSA3C multi-agent actor-critic
learner with a temporal-spatial-graph social encoder, classical ORCA and
social-force baselines, and a metrics/evaluation harness.
"""

__version__ = "0.1.0"
