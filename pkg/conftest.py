# Puts the repository root on sys.path so tests import `utils` like the scripts do.
