"""
Command line entry point: python main.py {mix,separate,evaluate,bench} ...
"""
from bss_app.cli import main

if __name__ == "__main__":
    main()
