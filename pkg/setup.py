from setuptools import setup, find_packages

setup(
    name="tube-synopsis",
    version="1.0.0",
    description="Video synopsis engine: groups tracked-object tubes and shifts them in time to build a short synopsis",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.10",
    install_requires=[
        "click>=8.0.0",
        "pydantic>=2.0.0",
        "rich>=13.0.0",
        "pyyaml>=6.0",
        "python-dotenv>=1.0.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "pillow>=10.0",
    ],
    extras_require={"dev": ["pytest>=7.0"]},
    entry_points={
        "console_scripts": [
            "tube-synopsis=tube_synopsis.cli:main",
        ],
    },
    include_package_data=True,
)
