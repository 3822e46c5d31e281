from setuptools import find_packages, setup

with open("README.md", "r") as f:
    long_description = f.read()

with open("requirements.txt", "r") as f:
    requirements = [r for r in f.read().splitlines() if r and not r.startswith("#") and not r.startswith("pytest")]

setup(
    name="spectrapan",
    version="0.1.0",
    description="Centroid-regression panoptic segmentation: spectral coordinate codec, edge distance sampling, losses and evaluation",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={
        "spectrapan": [
            "../requirements.txt",
            "utils/config.yaml",
        ]
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    python_requires=">=3.10",
    install_requires=requirements,
    extras_require={"test": ["pytest==7.4.3"]},
    entry_points={
        "console_scripts": [
            "spectrapan = spectrapan.run:run",
        ],
    },
)
