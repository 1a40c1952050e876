"""Counting exponents for number fields with prescribed Galois group."""

__version__ = "0.1.0"
