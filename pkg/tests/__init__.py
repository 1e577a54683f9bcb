"""
Test suite for stagdg.
"""
