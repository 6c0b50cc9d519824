from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="hebblab",  # Package name
    version="0.1.0",  # Version of the package
    author="LANKS",
    description="Bifurcation analysis of memory formation and forgetting in Hebbian Hopfield networks.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["scripts", "scripts.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "matplotlib>=3.7",
        "pydantic>=2.5",
        "python-dotenv>=1.0.1",
    ],
    entry_points={"console_scripts": ["hebblab=hebblab.cli:main"]},
)
