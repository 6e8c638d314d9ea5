#!/usr/bin/env python3
"""
Setup script for genobin

Checks the numeric stack, writes a default .env and runs a small
compress/decompress smoke test.
"""

import subprocess
import sys
from pathlib import Path

REQUIRED_PACKAGES = ["numpy", "scipy", "pydantic", "pydantic_settings", "colorama"]

DEFAULT_ENV = """GENOBIN_LOG_LEVEL=info
GENOBIN_SEED=0
GENOBIN_QUALITY_ALPHABET_SIZE=64
GENOBIN_QUALITY_OFFSET=33
"""


def create_env_file():
    """Create .env file with default settings if it doesn't exist."""
    env_file = Path(".env")
    if env_file.exists():
        print(".env file already exists")
        return True
    env_file.write_text(DEFAULT_ENV)
    print(".env file created with default settings")
    return True


def check_dependencies():
    """Check if required dependencies are installed."""
    print("Checking dependencies...")
    missing_packages = []
    for package in REQUIRED_PACKAGES:
        try:
            __import__(package)
            print(f"  ok       {package}")
        except ImportError:
            missing_packages.append(package)
            print(f"  missing  {package}")

    if missing_packages:
        print(f"\nMissing packages: {', '.join(missing_packages)}")
        install = input("Install missing packages? (y/n): ").lower().strip()
        if install == "y":
            return install_dependencies()
        return False
    return True


def install_dependencies():
    """Install required dependencies."""
    print("Installing dependencies...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
        return True
    except subprocess.CalledProcessError:
        print("Failed to install dependencies")
        print("Try running manually: pip install -r requirements.txt")
        return False


def run_smoke_test():
    """Round-trip a few synthetic reads through the default plan."""
    print("Running smoke test...")
    try:
        sys.path.insert(0, str(Path(".")))
        import numpy as np

        from src.core.seqio import dataset_from_sequences
        from src.models.plan_models import get_plan
        from src.services.container import Archive, compress, decompress

        rng = np.random.default_rng(0)
        bases = [rng.integers(0, 4, 50) for _ in range(20)]
        qualities = [rng.integers(0, 40, 50) for _ in range(20)]
        data = dataset_from_sequences(bases, 4, qualities)
        blob = compress(data, get_plan("order1")).to_bytes()
        restored = decompress(Archive.from_bytes(blob))
        if not all(np.array_equal(a.qualities, b.qualities) for a, b in zip(data.reads, restored.reads)):
            raise RuntimeError("roundtrip mismatch")
        print(f"  ok       roundtrip of {len(data.reads)} reads in {len(blob)} bytes")
        return True
    except Exception as e:
        print(f"  failed   {e}")
        return False


def show_usage_info():
    """Show usage information."""
    print("\nQuick start:")
    print("  python main.py analyze reads.fastq --field qualities --order 1 --out analysis/")
    print("  python main.py compress reads.fastq reads.cgc --plan default")
    print("  python main.py decompress reads.cgc restored.fastq")
    print("  python main.py eval reads.fastq --plans order0,order1,default")
    print("  pytest tests/")


def main():
    """Main setup function."""
    print("genobin setup")
    print("=" * 40)
    success = check_dependencies()
    create_env_file()
    if success and not run_smoke_test():
        success = False
    show_usage_info()
    print("\nSetup completed" + ("" if success else " with warnings"))
    return success


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # Invoked by a build frontend (pip/setuptools): metadata lives in pyproject.toml.
        from setuptools import setup

        setup()
    else:
        sys.exit(0 if main() else 1)
