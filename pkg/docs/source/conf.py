# Sphinx configuration for the Graph Rerank API reference.
#
# Build with `sphinx-build -b html source build/html` from the docs folder.

import os
import sys

# Project root on the import path
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.insert(0, PROJECT_ROOT)

# -- Project information -----------------------------------------------------

project = 'Graph Rerank'
copyright = '2026, Graph Rerank developers'
author = 'Graph Rerank developers'
release = '0.1.0'

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',           # API docs from docstrings
    'sphinx.ext.napoleon',          # Google style Args/Returns/Raises sections
    'sphinx.ext.intersphinx',       # Links to numpy, scipy and pydantic types
    'sphinx.ext.viewcode',          # Source links next to each object
    'sphinx_autodoc_typehints',     # Render type hints
    'myst_parser'                   # README and other Markdown pages
]

source_suffix = {
    '.rst': 'restructuredtext',
    '.md': 'markdown',
}

templates_path = []
exclude_patterns = []

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pydantic': ('https://docs.pydantic.dev/latest/', None),
}

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []

html_theme_options = {
    'collapse_navigation': False,
    'navigation_depth': 3,
    'titles_only': False
}

# -- Autodoc configuration ---------------------------------------------------

# Runtime-only dependencies
autodoc_mock_imports = ['scipy', 'tqdm', 'dotenv']
autodoc_member_order = 'bysource'
autodoc_default_options = {
    'members': True,
    'undoc-members': False,
    'show-inheritance': True,
    'exclude-members': 'model_config, model_fields, model_computed_fields',
}

# Class docstring only; pydantic models have no useful __init__ doc
autoclass_content = 'class'

napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_rtype = False

# sphinx_autodoc_typehints
typehints_fully_qualified = False
always_document_param_types = False
