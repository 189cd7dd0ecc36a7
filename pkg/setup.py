from setuptools import setup, find_packages

requirements = [
    "torch",
    "numpy",
    "scipy",
    "tqdm",
]

setup(
    name="zonal-nls",
    version="1.0.0",
    description="Zonal NLS simulator and multilinear estimate verification harness on the 4-sphere",
    python_requires=">=3.11",
    package_dir={
        "": "src",
    },
    packages=find_packages("src"),
    install_requires=requirements,
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "zonalnls=zonalnls.main:entry_point",
        ],
    },
)
