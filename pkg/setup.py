from setuptools import find_packages, setup

setup(
    name="price_intervals",
    packages=find_packages(where=".", include="price_intervals*"),
    package_data={"price_intervals": ["configs/*.yaml"]},
    version="0.0.1",
    description="Interval forecasts for daily price series.",
    long_description="One-step prediction intervals for daily price series "
    "from an ARMA-APARCH model, a t-copula Markov model and a two-headed "
    "quantile network, with a rolling backtest and regime-wise metrics.",
    python_requires=">=3.8",
    install_requires=[
        "numpy", "scipy", "pandas", "statsmodels", "pyyaml", "torch",
        "pytorch-lightning>=2.0", "ray"
    ],
    entry_points={
        "console_scripts": ["price-intervals=price_intervals.cli:main"]
    })
