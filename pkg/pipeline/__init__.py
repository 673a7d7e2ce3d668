"""
Orchestration on top of the tools: volume caching, training, evaluation,
inference, gradient checks and the click command line.
"""
