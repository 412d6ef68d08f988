# Configuration file for the Sphinx documentation builder.
#
# For the full list of options see
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = 'pykc: Tagged Rayleigh Gas Experiments in Python'
copyright = '2026, the pykc developers'
author = 'the pykc developers'


# -- General configuration ---------------------------------------------------

extensions = []

templates_path = ['_templates']

exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'
html_title = 'pykc: Tagged Rayleigh Gas Experiments in Python'

html_static_path = ['_static']
