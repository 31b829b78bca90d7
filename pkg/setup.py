from setuptools import setup
from pathlib import Path

this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding='utf-8')

setup(
    name="skyrmscope",
    version="1.0.0",
    author="MetaScope Team",
    author_email="your.email@example.com",
    description="SkyrmScope: optical skyrmions from Laguerre-Gaussian vector beams, six-projection polarimetry and skyrmion numbers",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        'errors',
        'paths',
        'field_synthesis',
        'sampling',
        'polarimetry',
        'topology',
        'reporting',
        'experiment_io',
        'run_config',
        'skyrmion_master',
    ],
    package_dir={'': 'src'},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'Pillow>=10.0.0',
        'pandas>=2.0.0',
        'jinja2>=3.1.2',
        'psutil>=5.9.5',
        'colorama>=0.4.6',
    ],
    extras_require={
        'dev': [
            'pytest>=7.4.0',
            'pytest-cov>=4.1.0',
            'hypothesis>=6.80.0',
            'pylint>=2.17.0',
            'autopep8>=2.0.0',
        ],
    },
    entry_points={
        'console_scripts': [
            'skyrmscope=skyrmion_master:main',
        ],
    },
    data_files=[('config', ['config/settings.ini', 'config/run_config.json'])],
)
