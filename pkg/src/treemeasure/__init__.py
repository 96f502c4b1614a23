"""Measures of tree languages recognized by weak alternating parity automata."""
