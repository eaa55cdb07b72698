"""From a SoC description to CWE lists, security assertions, policies and enforcement RTL."""

__version__ = "0.1.0"
