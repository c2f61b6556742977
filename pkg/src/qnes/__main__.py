"""Allow ``python -m qnes`` as an alias for the ``qnes`` command."""

from .harness import main

if __name__ == "__main__":
    main()
