"""
Test suite for uqsurro.
"""
