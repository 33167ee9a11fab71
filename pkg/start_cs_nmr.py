#!/usr/bin/env python3
"""
Startup script for the CS-NMR reconstruction toolkit
With arguments it runs the command-line interface; without, it checks the
environment and prints usage
"""

import os
import sys
import subprocess

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), 'pythonScript'))

REQUIRED_PACKAGES = ['numpy', 'scipy', 'pandas', 'joblib']


def print_banner():
    """Print startup banner"""
    print("=" * 80)
    print("CS-NMR - Compressive-Sensing NMR Quantum State Reconstruction")
    print("=" * 80)


def check_dependencies():
    """Check if required dependencies are installed"""
    print("🔍 Checking dependencies...")

    missing_packages = []
    for package in REQUIRED_PACKAGES:
        try:
            __import__(package)
            print(f"✓ {package}")
        except ImportError:
            missing_packages.append(package)
            print(f"✗ {package} (missing)")

    if missing_packages:
        print(f"\n⚠️  Missing packages: {', '.join(missing_packages)}")
        print("Install them with: pip install -r requirements.txt")
        return False

    print("✓ All dependencies found!")
    return True


def run_tests():
    """Run the test suite"""
    print("\n🧪 Running tests...")
    try:
        result = subprocess.run([sys.executable, '-m', 'pytest', '-q'],
                                cwd=os.path.dirname(os.path.abspath(__file__)),
                                capture_output=True, text=True, timeout=1800)
    except subprocess.TimeoutExpired:
        print("✗ Tests timed out")
        return False
    if result.returncode == 0:
        print("✓ All tests passed!")
        return True
    print("✗ Some tests failed:")
    print(result.stdout)
    print(result.stderr)
    return False


def show_usage_info():
    """Show usage information"""
    print("\n" + "=" * 80)
    print("📖 Usage Information")
    print("=" * 80)
    print("""
🎯 Commands:
   • state        - write a preset or random target state
   • measure      - simulate grouped NMR readouts (ideal or spectral path)
   • reconstruct  - FP-ADMM, least-squares or QST estimate from sampled data
   • sweep        - Monte Carlo fidelity vs sampling rate (cases A, B, C)
   • compare      - full-data QST against the compressive pipeline
   • report       - re-aggregate a records CSV

🔧 Examples:
   • python start_cs_nmr.py state --preset psi3 --out psi3.txt
   • python start_cs_nmr.py reconstruct --state psi3.txt --eta 0.75 --out rho.txt
   • python start_cs_nmr.py sweep --case A --n 3 --trials 100 --jobs 4 --out-dir results
   • python start_cs_nmr.py compare --n 4 --eta 0.5 --out table.json

⚙️  Configuration:
   • --config FILE with key=value lines; flags override file values
   • CS_NMR_SEED sets the seed when --seed is not given

🧪 Testing:
   • python start_cs_nmr.py --run-tests
""")


def main(argv=None):
    """Main startup function; returns the process exit status"""
    argv = sys.argv[1:] if argv is None else list(argv)

    if argv == ['--run-tests']:
        return 0 if check_dependencies() and run_tests() else 1

    if argv:
        from cs_nmr_cli import main as cli_main
        return cli_main(argv)

    print_banner()
    if not check_dependencies():
        print("\n❌ Please install missing dependencies first.")
        return 1
    show_usage_info()
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n👋 Goodbye!")
        sys.exit(0)
