"""
Learning package - Contains the feature extractor / predictor, the adaptation objective, the trainer and checkpoints.
"""
