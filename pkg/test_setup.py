#!/usr/bin/env python3
"""
Setup check for the PCLF MPC toolkit
Verifies imports, the artifact cache database and a tiny end-to-end set construction

Run directly: python test_setup.py
"""

import os
import sys
import tempfile
from pathlib import Path

# Add current directory to Python path
sys.path.append(str(Path(__file__).parent))


def check_imports():
    """Check that all modules can be imported"""
    try:
        print("Checking imports...")
        import solvers
        import geometry
        import pclf
        import terminal
        import mpc
        import simulate
        import config
        import models
        import cache
        import assets
        import figures
        import commands
        import cli
        print("✅ All modules imported successfully")
        return True
    except ImportError as e:
        print(f"❌ Import error: {e}")
        return False


def check_database(url):
    """Check cache table creation and a store/load round trip"""
    try:
        print("Checking cache database...")
        from models import init_database, get_database_session
        from cache import clear_artifacts, content_key, load_artifact, store_artifact

        init_database(url)
        db = get_database_session()
        db.close()

        key = content_key({"check": 1}, kind="setup")
        store_artifact(key, "setup", {"value": [1.0, 2.0]}, name="setup")
        if load_artifact(key) != {"value": [1.0, 2.0]}:
            print("❌ Cache round trip returned a different payload")
            return False
        clear_artifacts("setup")
        print("✅ Cache database working")
        return True
    except Exception as e:
        print(f"❌ Database error: {e}")
        return False


def check_bundled_configs():
    """Check that both bundled experiment files parse"""
    try:
        print("Checking bundled configs...")
        from config import bundled_examples

        examples = bundled_examples()
        for name, config in examples.items():
            print(f"   {name}: n={config.A.shape[0]}, m={config.B.shape[1]}, N={config.horizon}, eps={config.eps:g}")
        print("✅ Bundled configs valid")
        return True
    except Exception as e:
        print(f"❌ Config error: {e}")
        return False


def check_scalar_pipeline():
    """x⁺ = 2x + u with |x|, |u| ≤ 1: the contractive set is |x| ≤ 1/(2 - λ)"""
    try:
        print("Checking set construction...")
        from geometry import HPolytope, support
        from pclf import LinearSystem, max_contractive_set

        interval = HPolytope.box([-1.0], [1.0])
        p = max_contractive_set(LinearSystem([[2.0]], [[1.0]]), interval, interval, eps=0.1)
        bound = support(p.polytope, [1.0])
        if abs(bound - 1.0 / 1.1) > 1e-6:
            print(f"❌ Contractive set bound {bound:.8f}, expected {1.0 / 1.1:.8f}")
            return False
        print("✅ Set construction working")
        return True
    except Exception as e:
        print(f"❌ Set construction error: {e}")
        return False


def main():
    """Run all checks"""
    print("📐 PCLF MPC Toolkit Setup Check")
    print("=" * 50)

    workdir = tempfile.mkdtemp(prefix="pclf-setup-")
    url = f"sqlite:///{os.path.join(workdir, 'setup.db')}"

    checks = [
        ("Module Imports", check_imports),
        ("Cache Database", lambda: check_database(url)),
        ("Bundled Configs", check_bundled_configs),
        ("Set Construction", check_scalar_pipeline),
    ]

    passed = 0
    total = len(checks)

    for name, check in checks:
        print(f"\n🧪 Running {name}...")
        if check():
            passed += 1

    print(f"\n{'=' * 50}")
    print(f"Check Results: {passed}/{total} passed")

    if passed == total:
        print("🎉 All checks passed!")
        print("\nNext steps:")
        print("1. Optionally copy .env.example to .env and adjust PCLF_* settings")
        print("2. Run: python main.py certify --config example1")
        print("3. Run the test suite: pytest (add --runslow for the full examples)")
    else:
        print("❌ Some checks failed. Please check the errors above.")
        return 1

    # Clean up the check database
    try:
        os.remove(os.path.join(workdir, "setup.db"))
        os.rmdir(workdir)
    except OSError:
        pass

    return 0


if __name__ == "__main__":
    sys.exit(main())
