import sys
from datetime import datetime
from pathlib import Path

try:
    from colorama import Fore, Style, init
except ImportError:
    print("colorama is not installed; run: pip install -r requirements.txt")
    sys.exit(1)

_REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(_REPO_ROOT / "src"))
from paths import CONFIG_DIR, LOGS_DIR, RUNS_DIR, SETTINGS_FILE

init(autoreset=True)

REQUIRED_PACKAGES = ["numpy", "scipy", "PIL", "pandas", "jinja2", "psutil", "colorama"]
OPTIONAL_PACKAGES = ["hypothesis", "pytest"]
PROJECT_MODULES = ["field_synthesis", "polarimetry", "sampling", "topology", "experiment_io", "reporting",
                   "run_config", "skyrmion_master"]


def print_header(text):
    print(f"\n{Fore.CYAN}{Style.BRIGHT}{'='*60}")
    print(f"{Fore.CYAN}{Style.BRIGHT}{text}")
    print(f"{Fore.CYAN}{Style.BRIGHT}{'='*60}\n")

def print_success(text):
    print(f"{Fore.GREEN}✓ {text}")

def print_error(text):
    print(f"{Fore.RED}✗ {text}")

def print_warning(text):
    print(f"{Fore.YELLOW}⚠ {text}")

def print_info(text):
    print(f"{Fore.BLUE}ℹ {text}")

def check_python_version():
    version = sys.version_info
    if version.major >= 3 and version.minor >= 10:
        print_success(f"Python {version.major}.{version.minor}.{version.micro}")
        return True
    else:
        print_error(f"Python {version.major}.{version.minor}.{version.micro} (Requires 3.10+)")
        return False

def check_python_package(package_name, required=True):
    try:
        module = __import__(package_name)
        version = getattr(module, "__version__", "unknown version")
        print_success(f"Python package: {package_name} ({version})")
        return True
    except ImportError:
        if required:
            print_error(f"Python package: {package_name} (Not installed)")
        else:
            print_warning(f"Python package: {package_name} (Not installed, needed for the test suite)")
        return False

def check_project_modules():
    print_header("Checking Project Modules")
    results = []
    for name in PROJECT_MODULES:
        try:
            __import__(name)
            print_success(f"Module: {name}")
            results.append(True)
        except Exception as e:
            print_error(f"Module: {name} ({e})")
            results.append(False)
    return results

def check_configuration():
    print_header("Checking Configuration")
    try:
        from run_config import RunConfig
        cfg = RunConfig.from_settings()
        print_success(f"{SETTINGS_FILE.name}: grid={cfg.grid}, deltas={cfg.deltas}")
        return True
    except Exception as e:
        print_error(f"{SETTINGS_FILE}: {e}")
        return False

def check_directory_structure():
    print_header("Checking Directory Structure")

    required_dirs = [
        (CONFIG_DIR, "config/"),
        (RUNS_DIR, "runs/"),
        (LOGS_DIR, "runs/logs/"),
    ]

    results = []
    for dir_path, friendly_name in required_dirs:
        if dir_path.exists():
            print_success(f"{friendly_name}: {dir_path}")
            results.append(True)
        else:
            print_warning(f"{friendly_name}: {dir_path} (Will be created on first run)")
            results.append(False)

    return all(results)

def generate_report(all_results):
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    report_path = LOGS_DIR / f"verification_{timestamp}.txt"

    passed = sum(all_results)
    total = len(all_results)
    with open(report_path, 'w', encoding='utf-8') as f:
        f.write("="*60 + "\n")
        f.write("SKYRMSCOPE INSTALLATION VERIFICATION\n")
        f.write("="*60 + "\n\n")
        f.write(f"Date: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
        f.write(f"Platform: {sys.platform}\n")
        f.write(f"Python: {sys.version.split()[0]}\n\n")
        f.write(f"Checks passed: {passed}/{total}\n")
        if passed == total:
            f.write("Status: ALL CHECKS PASSED ✓\n")
        else:
            f.write("Status: FAILURES - Installation incomplete\n")
        f.write("\n" + "="*60 + "\n")

    return report_path

def main():
    print_header("INSTALLATION VERIFICATION TOOL")
    print_info(f"Platform: {sys.platform}")
    print_info(f"Python: {sys.version.split()[0]}")

    all_results = []

    print_header("Checking Python Environment")
    all_results.append(check_python_version())
    for package in REQUIRED_PACKAGES:
        all_results.append(check_python_package(package))
    for package in OPTIONAL_PACKAGES:
        check_python_package(package, required=False)

    check_directory_structure()
    if all(all_results):
        all_results.extend(check_project_modules())
        all_results.append(check_configuration())

    print_header("VERIFICATION SUMMARY")

    total = len(all_results)
    passed = sum(all_results)
    failed = total - passed

    print(f"Total Checks: {total}")
    print(f"Passed: {Fore.GREEN}{passed}")
    print(f"Failed: {Fore.RED}{failed}")
    print()

    if passed == total:
        print_success("ALL CHECKS PASSED - Installation complete! ✓")
        status_code = 0
    else:
        print_error("FAILURES - Installation incomplete")
        print_info("Run: pip install -r requirements.txt")
        status_code = 1

    report_path = generate_report(all_results)
    print()
    print_info(f"Detailed report saved to: {report_path}")

    return status_code

if __name__ == "__main__":
    try:
        exit_code = main()
        sys.exit(exit_code)
    except KeyboardInterrupt:
        print("\n\nVerification interrupted by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n{Fore.RED}Error during verification: {e}")
        sys.exit(1)
