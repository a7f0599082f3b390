"""Placeholder; implemented later in the build."""
def main(argv=None):
    raise SystemExit("not implemented yet")
