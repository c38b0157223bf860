import re

from setuptools import find_packages, setup

with open("src/anchorsplat/__version__.py", encoding="utf8") as f:
    version = re.search(r'__version__ = "(.*?)"', f.read()).group(1)  # type: ignore

TEST_REQUIRES = [
    "pytest>=6.2.5",
]
DEV_REQUIRES = ["mypy>=0.910", "flake8>=3.9.2", "black==22.3.0", "pre-commit>=2.15.0"]

setup(
    name="anchorsplat",
    description="Anchor-aligned Gaussian splatting reconstruction toolkit",
    author="AnchorSplat",
    maintainer="AnchorSplat",
    version=version,
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(where='src'),
    package_dir={"": "src"},
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 4 - Beta",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
    install_requires=[
        'click>=8.0',
        'PyYAML>=5.3.1',
        'tqdm>=4.47.0',
        'python-dotenv>=0.14.0',
        'jsonschema>=3.0',
        "pydantic>=1.8,<2",
        "xxhash>=1.3.0",
        "numpy>=1.20",
        "torch>=1.13",
        "plyfile>=0.7.4",
        "Pillow>=8.0",
    ],
    extras_require={"tests": TEST_REQUIRES, "dev": TEST_REQUIRES + DEV_REQUIRES},
    include_package_data=True,
    package_data={"anchorsplat.schemas": ["*.json"]},
    entry_points={"console_scripts": ["asplat=anchorsplat:cli"]},
)
