from setuptools import setup, find_packages

setup(
    name="pcn-forecast",
    version="0.1.0",
    description="PCN one-bit load estimation with ARIMA correction, simulator and experiment harness",
    author="User",
    author_email="user@example.com",
    packages=find_packages(include=["pcn", "pcn.*"]),
    install_requires=[
        "ray[default]>=2.0.0",
        "psutil>=5.9.0",
        "python-dotenv>=0.19.0",
        "numpy>=1.21.0",
        "pandas>=1.3.0",
        "scipy>=1.7.0",
        "statsmodels>=0.13.0",
        "pydantic>=2.0",
    ],
    extras_require={
        "test": [
            "pytest>=7.0",
            "hypothesis>=6.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "pcn=pcn.cli:main",
        ],
    },
    python_requires=">=3.9",
)
