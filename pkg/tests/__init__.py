"""
Test suite for the separation front-end and the evaluation harness.
"""
