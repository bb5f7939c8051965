from pathlib import Path

from setuptools import find_packages, setup

setup(
    name="python-icancel",
    packages=find_packages(exclude=["tests"]),
    license="MIT",
    description=(
        "Blind co-channel QAM interference cancellation for OFDM with a "
        "convolutional LSTM autoencoder trained on plain numpy. "
        "(optional Pillow support for image plots)."
    ),
    long_description=Path("README.rst").read_text(),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Communications",
        "Topic :: Scientific/Engineering",
    ],
    entry_points={"console_scripts": ["python-icancel = icancel.pyicancel:main"]},
    use_scm_version={
        "version_scheme": "post-release",
        "write_to": "icancel/version.py",
        "fallback_version": "0.1.0",
    },
    setup_requires=["setuptools_scm"],
    python_requires=">=3.8",
    install_requires=["numpy>=1.20", "scipy>=1.5"],
    extras_require={"images": ["pillow>=8.0"], "test": ["pytest", "pytest-cov"]},
    include_package_data=True,
)
