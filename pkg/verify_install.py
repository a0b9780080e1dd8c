"""Check that every colorfield module imports and that a tiny calculation runs."""
import sys


def check_import(module_name, feature_name):
    try:
        __import__(module_name)
        print(f"✅ {feature_name} module loaded successfully.")
        return True
    except ImportError as e:
        print(f"❌ {feature_name} module failed to load: {e}")
        return False
    except Exception as e:
        print(f"❌ {feature_name} module error: {e}")
        return False


def check_smoke():
    try:
        from colorfield.field import ghz_state, energy
        total = energy(ghz_state(4)).total
    except Exception as e:
        print(f"❌ Smoke calculation failed: {e}")
        return False
    if abs(total - 0.5) > 1e-12:
        print(f"❌ GHZ purity for n=4 came out as {total!r}, expected 0.5")
        return False
    print("✅ GHZ purity for n=4 is 0.5.")
    return True


def main():
    print("🔍 Verifying colorent installation...\n")

    modules = [
        ("colorfield.coupling", "Coupling tables"),
        ("colorfield.field", "Field and purity"),
        ("colorfield.moments", "Moments and cumulants"),
        ("colorfield.largenc", "Large-N_c solver"),
        ("colorfield.sampler", "Metropolis sampler"),
        ("colorfield.history", "Run history"),
        ("colorfield.main", "Command line"),
    ]

    success = all([check_import(module, name) for module, name in modules])
    success = check_smoke() and success

    print("\n" + ("=" * 50))
    if success:
        print("🎉 colorent is installed and working.")
        print("Try: colorent dyson --n 4 --beta-tilde 0.5")
    else:
        print("⚠️ Some modules have missing dependencies or errors.")
        print("Please run: pip install -e .")
    print("=" * 50)
    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
