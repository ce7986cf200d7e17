#!/usr/bin/env python3
"""
Fillscape - Main Entry Point

Numerical laboratory for filling volumes of Riemannian discs, boundary
distance tables, L-infinity representations and Finsler area densities.

Usage:
    python main.py density norm.json --def loewner
    python main.py bdtable field.json --p 16 --out table.csv
    python main.py experiment hemisphere configs/hemisphere.json --seed 0

Or use the module directly:
    python -m fillscape.cli list
"""

if __name__ == "__main__":
    # Import and run the CLI
    from fillscape.cli import main
    main()
