#!/usr/bin/env python3
"""
Startup script for Tile Composer
Run this from the project root instead of the installed console script
"""

import sys
from pathlib import Path


def main():
    """Main startup function"""
    if not Path("app").exists():
        print("Error: please run this script from the project root directory")
        sys.exit(1)

    from app.main import main as cli

    sys.exit(cli())


if __name__ == "__main__":
    main()
