"""Evaluation harnesses: link prediction, density estimation, node classification, likelihood oracle."""
