"""
triplescore
Relevance scores for type-like knowledge base triples!
"""
import os
import sys
from setuptools import setup, find_packages

short_description = __doc__.split("\n")

# from https://github.com/pytest-dev/pytest-runner#conditional-requirement
needs_pytest = {'pytest', 'test', 'ptr'}.intersection(sys.argv)
pytest_runner = ['pytest-runner'] if needs_pytest else []

try:
    with open("readme.md", "r") as handle:
        long_description = handle.read()
except OSError:
    long_description = "\n".join(short_description[2:])

version = {}
with open(os.path.join("triplescore", "_version.py")) as handle:
    exec(handle.read(), version)


setup(
    # Self-descriptive entries which should always be present
    name='triplescore',
    author='triplescore developers',
    description=short_description[1],
    long_description=long_description,
    long_description_content_type="text/markdown",
    version=version["__version__"],
    license='LGPLv3',

    # Which Python importable modules should be included when your package is installed
    packages=find_packages(),

    # Lexicon assets and the stoplist live in triplescore/data
    include_package_data=True,
    package_data={'triplescore': ['data/*.txt', 'data/*.tsv', 'data/README.md']},

    # Allows `setup.py test` to work correctly with pytest
    setup_requires=[] + pytest_runner,

    install_requires=[
        'numpy',
        'scipy',
        'scikit-learn',
        'joblib',
    ],
    extras_require={'test': ['pytest', 'pytest-cov', 'hypothesis']},
    entry_points={'console_scripts': ['triplescore=triplescore.cli:main']},
    python_requires=">=3.8",

    # Manual control if final package is compressible or not, set False to prevent the .egg from being made
    zip_safe=False,

)
