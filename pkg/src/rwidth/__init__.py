"""Robust width certificates and recovery bound checks for Lasso and Dantzig selector."""

__version__ = "0.1.0"
