"""Schedule quality plugins"""
