"""
Utilities module for the label super resolution lab.
"""
