# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import inspect
import os
import sys

import django
from django.utils.encoding import force_str
from django.utils.html import strip_tags

sys.path.insert(0, os.path.abspath(".."))
sys.path.insert(0, os.path.abspath("../benchproject"))
os.environ["DJANGO_SETTINGS_MODULE"] = "benchproject.settings"
django.setup()

# -- Project information -----------------------------------------------------

project = "django-ibmg"
copyright = "2024, G. Celata"
author = "G. Celata"
release = "0.1.0"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.todo",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "djcommanddoc",
]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store", "_ext"]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_options = {
    "logo_only": False,
    "prev_next_buttons_location": "bottom",
    "collapse_navigation": True,
    "navigation_depth": 4,
    "titles_only": True,
}

autodoc_default_flags = [
    "members",
]
autosummary_generate = True
autoclass_content = "class"
autodoc_member_order = "bysource"


def process_docstring(app, what, name, obj, options, lines):
    # This causes import errors if left outside the function
    from django.db import models

    # Only look at objects that inherit from Django's base model class
    if inspect.isclass(obj) and issubclass(obj, models.Model):
        for field in obj._meta.get_fields():
            if not hasattr(field, "verbose_name"):
                continue
            help_text = strip_tags(force_str(field.help_text))
            verbose_name = force_str(field.verbose_name).capitalize()
            lines.append(":param %s: %s" % (field.attname, help_text or verbose_name))
            lines.append(":type %s: %s" % (field.attname, type(field).__name__))
    return lines


def setup(app):
    # Register the docstring processor with sphinx
    app.connect("autodoc-process-docstring", process_docstring)
