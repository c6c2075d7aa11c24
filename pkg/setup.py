"""
Install the resonator-detection toolkit and its `rd` command.
Run from the project root:
  pip install -e .
  rd coeffs

Data, config.json and logs default to the project root; set RD_DATA_DIR to
put them elsewhere.
"""
from setuptools import setup

MODULES = [
    "app_paths",
    "cli",
    "config_rd",
    "estimator",
    "gaussian_state",
    "measurement_model",
    "rd_io",
    "scan_simulator",
    "transfer",
]

setup(
    name="resonator-detection",
    version="1.0.0",
    description="Phase-coherent resonator detection of two-mode sideband Gaussian states",
    py_modules=MODULES,
    python_requires=">=3.8",
    install_requires=["numpy>=1.22.0", "scipy>=1.8.0"],
    extras_require={"test": ["pytest>=7.0.0"]},
    entry_points={"console_scripts": ["rd=cli:main"]},
)
