# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/stable/config

# -- Path setup --------------------------------------------------------------

# Incase the project was not installed
import os
import sys
sys.path.insert(0, os.path.abspath('..'))

import triplescore


# -- Project information -----------------------------------------------------

project = 'triplescore'
copyright = "2026, triplescore developers"
author = 'triplescore developers'

# The short X.Y version
version = triplescore.__version__
# The full version, including alpha/beta/rc tags
release = triplescore.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autosummary',
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
]

autosummary_generate = True
napoleon_google_docstring = False
napoleon_use_param = False
napoleon_use_ivar = True

source_suffix = '.rst'
master_doc = 'index'
language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'default'

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'sklearn': ('https://scikit-learn.org/stable/', None),
}


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'triplescoredoc'


# -- Options for LaTeX / manual page output ----------------------------------

latex_documents = [
    (master_doc, 'triplescore.tex', 'triplescore Documentation',
     'triplescore', 'manual'),
]

man_pages = [
    (master_doc, 'triplescore', 'triplescore Documentation',
     [author], 1)
]
