#!/usr/bin/env python3
"""
Entry point for the PCLF MPC experiment runner
"""

from dotenv import load_dotenv

from cli import main

if __name__ == "__main__":
    # PCLF_* runtime settings may come from a local .env
    load_dotenv()
    main()
