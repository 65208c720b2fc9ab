# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = 'goalstep'
copyright = '2025, the goalstep developers'
author = 'the goalstep developers'

# -- General configuration ---------------------------------------------------

extensions = [
    'autoapi.extension',
]
autoapi_dirs = [
    "../goalstep"
]
autodoc_typehints = 'description'

templates_path = ['_templates']
exclude_patterns = []

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']

html_theme_options = {
    'navigation_depth': 10,
}
