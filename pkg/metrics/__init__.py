"""
Metrics package - Contains the kernel linear algebra, conditional statistics, discrepancy family and their gradients.
"""
