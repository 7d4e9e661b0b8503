"""Bundled data files: rule catalogs, rate tables, and a small offline demo."""
