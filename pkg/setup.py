from setuptools import setup, find_packages

setup(
    name="dynamic-modulation-lab",
    version="0.1.0",
    description="Modulation equations for slow passage through pattern-forming instabilities",
    author="Your Name",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.10",
    install_requires=[
        "numpy",
        "scipy>=1.9",
        "sympy",
        "pandas>=1.5",
        "psutil",
    ],
    entry_points={
        "console_scripts": [
            "bmod-lab=src.orchestrator:main",
        ],
    },
)
