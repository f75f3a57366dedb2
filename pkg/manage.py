#!/usr/bin/env python
"""Command-line entry point for the kernel attention experiments."""
import os
import sys

USAGE = """usage: manage.py <subcommand> [--seed N] [--config FILE] [--out DIR] [options]

experiment subcommands (hyphens and underscores are interchangeable):
  decompose-check    verify the similarity x magnitude identities
  kernel-converge    random Fourier feature convergence and error-bound check
  sparsity-sweep     attention sparsity as the magnitude norm exponent shrinks
  train              train a variant on a synthetic task
  p-sensitivity      regression error across magnitude norm exponents
  bench-complexity   operation-count complexity fits
  gradcheck          reverse-mode gradients against finite differences
"""

# handled by Django's ManagementUtility rather than a command module
UTILITY_ARGUMENTS = {'help', '--help', '-h', 'version', '--version'}


def resolve_subcommand(name, commands):
    """Command module name for ``name`` (hyphens map to underscores), or None."""
    if name in UTILITY_ARGUMENTS or name.startswith('-'):
        return name
    candidate = name.replace('-', '_')
    return candidate if candidate in commands else None


def main():
    """Run experiment subcommands."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'kernel_attention.settings')
    if len(sys.argv) < 2:
        sys.stderr.write(USAGE)
        sys.exit(2)
    try:
        import django
        from django.core.management import execute_from_command_line, get_commands
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    django.setup()
    subcommand = resolve_subcommand(sys.argv[1], get_commands())
    if subcommand is None:
        sys.stderr.write(f"Unknown subcommand: {sys.argv[1]!r}\n\n{USAGE}")
        sys.exit(2)
    sys.argv[1] = subcommand
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
