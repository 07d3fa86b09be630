"""Bounded model checking of graphical hybrid automata through SMT-LIB encodings."""

__version__ = "0.1.0"
