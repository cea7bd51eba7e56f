#!/usr/bin/env python3
"""
CLEANER Wrapper
Simple wrapper script for the cleaner CLI
"""

import os
import sys
import subprocess
from pathlib import Path

def main():
    """Run the cleaner CLI with all arguments passed through"""
    root = Path(__file__).parent.resolve()
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [str(root), env.get("PYTHONPATH")]))

    # Pass all arguments to the CLI
    cmd = [sys.executable, "-m", "cleaner"] + sys.argv[1:]

    try:
        result = subprocess.run(cmd, check=False, env=env)
        return result.returncode
    except KeyboardInterrupt:
        print("\n⚠️  Operation cancelled by user")
        return 1
    except Exception as e:
        print(f"❌ Error running cleaner: {str(e)}")
        return 1

if __name__ == "__main__":
    sys.exit(main())
