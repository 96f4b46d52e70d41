"""
Data package - Contains the Dataset type, CSV ingestion, standardization and the synthetic conditional-shift generator.
"""
