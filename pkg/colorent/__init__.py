"""Proxy entrypoint for the colorent console script.

The numerical package is imported inside `main()` so a missing dependency
is reported as a readable message instead of a traceback at startup.
"""

def main(argv=None):
    """Run the colorfield command line. Returns an exit code."""
    try:
        from colorfield.main import main as _real_main  # local import
    except Exception as e:
        print("colorent: failed to import the colorfield package. Reinstall with `pip install -e .`.\n")
        print(f"Cause: {e.__class__.__name__}: {e}")
        return 1

    return _real_main(argv)

__all__ = ["main"]
