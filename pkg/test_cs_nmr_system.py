"""
Test script for the CS-NMR reconstruction system
Validates all components and their integration
"""

import os
import sys

# Add pythonScript to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'pythonScript'))


def test_imports():
    """Test that all modules can be imported"""
    print("Testing imports...")

    from quantum_core import DensityMatrix, fidelity
    print("✓ quantum_core imported successfully")

    from nmr_simulator import build_scheme, measure_groups
    print("✓ nmr_simulator imported successfully")

    from sensing import SamplingProblem, assemble_from_groups
    print("✓ sensing imported successfully")

    from solvers import fp_admm_solve, ls_solve, qst_invert
    print("✓ solvers imported successfully")

    from monte_carlo_harness import run_sweep
    print("✓ monte_carlo_harness imported successfully")

    from cs_nmr_system import CSNMRReconstructionSystem
    print("✓ CSNMRReconstructionSystem imported successfully")

    from cs_nmr_cli import main
    print("✓ cs_nmr_cli imported successfully")


def test_pipeline_full_rate():
    """Acquire, sample and reconstruct psi2 with every group"""
    print("\nTesting full-rate pipeline...")
    from cs_nmr_system import CSNMRReconstructionSystem

    system = CSNMRReconstructionSystem(2)
    system.prepare_state(preset="psi2")
    result = system.run_pipeline(eta=1.0, seed=0)
    print(f"✓ FP-ADMM fidelity {result['fidelity']:.6f} after {result['iterations']} iterations")
    assert "error" not in result
    assert result["rows"] == 6 * 4 + 1
    assert result["fidelity"] >= 0.999


def test_pipeline_solvers():
    """Each solver on a complete random-state acquisition"""
    print("\nTesting solvers...")
    from cs_nmr_system import CSNMRReconstructionSystem

    system = CSNMRReconstructionSystem(3)
    system.prepare_state(seed=21)
    for solver, floor in (("ls", 0.9999), ("qst", 0.9999)):
        result = system.run_pipeline(eta=1.0, seed=1, solver=solver)
        print(f"✓ {solver} fidelity {result['fidelity']:.6f}")
        assert result["fidelity"] >= floor

    partial = system.run_pipeline(eta=0.5, seed=1)
    print(f"✓ half-rate FP-ADMM fidelity {partial['fidelity']:.6f}")
    assert 0.0 <= partial["fidelity"] <= 1.0
    assert partial["rows"] == 8 * 8 + 1


def test_pauli_mode():
    """Pauli sampling skips the group acquisition"""
    print("\nTesting Pauli sampling...")
    from cs_nmr_system import CSNMRReconstructionSystem

    system = CSNMRReconstructionSystem(2)
    system.prepare_state(preset="psi2")
    result = system.run_pipeline(eta=1.0, seed=5, mode="pauli")
    assert result["fidelity"] >= 0.999999
    assert result["converged"]
    values = system.pauli_values()
    assert values["ZZ"] == 1.0
    assert values["XX"] == 0.0
    print("✓ Pauli-mode reconstruction and readback working")


def test_error_handling():
    """Pipeline errors come back as a dict"""
    print("\nTesting error handling...")
    from cs_nmr_errors import InvalidArgumentError
    from cs_nmr_system import CSNMRReconstructionSystem

    system = CSNMRReconstructionSystem(2)
    assert "error" in system.run_pipeline(eta=1.0, seed=0)
    system.prepare_state(preset="psi2")
    assert "error" in system.run_pipeline(eta=1.0, seed=0, solver="magic")
    assert "error" in system.run_pipeline(eta=2.0, seed=0)
    try:
        system.prepare_state(preset="psi3")
    except InvalidArgumentError:
        print("✓ Qubit-count mismatch rejected")
    else:
        raise AssertionError("psi3 accepted by a two-qubit system")


def test_system_status():
    """Status reflects each pipeline stage"""
    print("\nTesting system status...")
    from cs_nmr_system import CSNMRReconstructionSystem

    system = CSNMRReconstructionSystem(3)
    status = system.get_system_status()
    assert status["groups"] == 16
    assert status["scheme_complete"]
    assert not status["state_prepared"]

    system.prepare_state(preset="psi3")
    system.run_pipeline(eta=0.75, seed=2)
    status = system.get_system_status()
    assert status["measured"]
    assert status["problem_rows"] == 12 * 8 + 1
    assert status["reconstructed"]
    print(f"✓ Status: {status}")


def main():
    """Run all tests"""
    print("🧪 CS-NMR Reconstruction System - Comprehensive Test Suite")
    print("=" * 60)

    tests = [
        ("Import Test", test_imports),
        ("Full-Rate Pipeline Test", test_pipeline_full_rate),
        ("Solver Test", test_pipeline_solvers),
        ("Pauli Mode Test", test_pauli_mode),
        ("Error Handling Test", test_error_handling),
        ("System Status Test", test_system_status)
    ]

    passed = 0
    total = len(tests)

    for test_name, test_func in tests:
        print(f"\n{'=' * 20} {test_name} {'=' * 20}")
        try:
            test_func()
            passed += 1
            print(f"✓ {test_name} PASSED")
        except Exception as e:
            print(f"✗ {test_name} FAILED with exception: {e}")

    print("\n" + "=" * 60)
    print(f"Test Results: {passed}/{total} tests passed")
    print("=" * 60)

    if passed == total:
        print("🎉 All tests passed! The reconstruction system is ready to use.")
        return True
    else:
        print("⚠️  Some tests failed. Please check the errors above.")
        return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
