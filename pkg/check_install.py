#!/usr/bin/env python3
"""
Check if all dependencies are installed for templum
"""

import sys


def check_python_version():
    print("Checking Python version...")
    ok = sys.version_info >= (3, 10)
    marker = "✓" if ok else "✗"
    print(f"  {marker} Python {sys.version.split()[0]} (3.10 or newer required)")
    return ok


def check_python_packages():
    """Check if required Python packages are installed"""
    print("\nChecking Python packages...")
    packages = {
        'numpy': 'numpy',
        'flask': 'Flask',
        'werkzeug': 'Werkzeug',
        'rich': 'rich',
        'pytest': 'pytest',
    }
    if sys.version_info < (3, 11):
        packages['tomli'] = 'tomli'

    missing = []
    for module, package_name in packages.items():
        try:
            __import__(module)
            print(f"  ✓ {package_name}")
        except ImportError:
            print(f"  ✗ {package_name} - MISSING")
            missing.append(package_name)

    if missing:
        print(f"\nMissing packages: {', '.join(missing)}")
        print("Install with: pip install " + " ".join(missing))
        return False
    return True


def check_package_imports():
    """Import every templum sub-package"""
    print("\nChecking templum modules...")
    ok = True
    for module in ('modules.graph', 'modules.protocol', 'modules.controller', 'modules.worker',
                   'modules.driver', 'modules.apps', 'modules.harness'):
        try:
            __import__(module)
            print(f"  ✓ {module}")
        except Exception as e:
            print(f"  ✗ {module} - {type(e).__name__}: {e}")
            ok = False
    return ok


def main():
    print("=" * 60)
    print("templum - Dependency Check")
    print("=" * 60)
    print()

    python_ok = check_python_version()
    packages_ok = check_python_packages()
    modules_ok = packages_ok and check_package_imports()

    print()
    print("=" * 60)
    if python_ok and packages_ok and modules_ok:
        print("✓ All required dependencies are installed!")
        print("You can now run: python harness.py local config/scenarios/lr.toml")
    else:
        print("✗ Some dependencies are missing. Please install them.")
        sys.exit(1)
    print("=" * 60)


if __name__ == '__main__':
    main()
