"""hatcheck: checks effectful programs against trace-automata invariants."""

__version__ = "0.1.0"
