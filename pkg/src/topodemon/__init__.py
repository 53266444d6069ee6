"""Surface-code strip simulator and thermodynamic ledger for a nonlocal demon protocol."""
__version__ = "0.1.0"
