# Depth-cue tools: geometry, volumes, fusion, losses, synthetic data, evaluation
