"""
Main entry point for the surrogate UQ toolkit.
"""
from .cli import cli

if __name__ == "__main__":
    cli()
