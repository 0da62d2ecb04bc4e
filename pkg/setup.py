"""
    policybound
"""
from setuptools import setup
from collections import namedtuple

import os

HERE = os.path.dirname(os.path.abspath(__file__))

Module = namedtuple(
    "Module",
    ["name", "desc", "requirements", "extras", "entry_points"],
)

with open(os.path.join(HERE, "version.txt")) as f:
    VERSION = f.read().strip()

with open(os.path.join(HERE, "README.md")) as f:
    LONG_DESCRIPTION = f.read()

all_modules = [
    Module(
        "policybound",
        "Unit-level difference-in-differences bounds under coarsened treatments",
        [
            "numpy>=1.22",
            "scipy>=1.8",
            "pandas>=1.5",
            "statsmodels>=0.13",
            "lxml",
            "psutil",
            "python-dotenv>=0.19",
        ],
        {"test": ["pytest", "hypothesis"]},
        {"console_scripts": ["policybound=policybound.policybound:cli"]},
    ),
]

for module in all_modules:
    setup(
        name=module.name,
        version=VERSION,
        description=module.desc,
        long_description=LONG_DESCRIPTION,
        long_description_content_type="text/markdown",
        packages=["policybound"],
        package_data={"policybound": ["data/*.csv"]},
        python_requires=">=3.8",
        install_requires=module.requirements,
        extras_require=module.extras,
        entry_points=module.entry_points,
        classifiers=[
            "Development Status :: 4 - Beta",
            "Intended Audience :: Science/Research",
            "License :: OSI Approved :: Apache Software License",
            "Operating System :: OS Independent",
            "Programming Language :: Python :: 3",
            "Programming Language :: Python :: 3.8",
            "Topic :: Scientific/Engineering :: Mathematics",
        ],
    )
