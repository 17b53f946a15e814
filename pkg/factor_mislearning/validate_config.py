#!/usr/bin/env python3
"""
Configuration validation script for the factor mislearning pipeline.
Run this to check that a config file parses and that its input files exist.
"""

import sys

from .config import load_pipeline_config, missing_paths
from .errors import ConfigError


def main(path: str | None = None) -> bool:
    """Validate a pipeline config and report what is wrong with it."""
    print(f"Validating configuration {path or '(defaults)'}...")

    try:
        cfg = load_pipeline_config(path)
    except ConfigError as e:
        print(f"Configuration error: {e}")
        return False

    missing = missing_paths(cfg)
    if missing:
        print("Missing input files:")
        for entry in missing:
            print(f"  {entry}")
        return False

    if cfg.data.returns is None:
        print("No [data] returns file set; only the simulate subcommand can run")
    print("Configuration valid")
    return True


if __name__ == "__main__":
    success = main(sys.argv[1] if len(sys.argv) > 1 else None)
    sys.exit(0 if success else 1)
