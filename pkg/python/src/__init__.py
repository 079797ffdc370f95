# Python package for piperate
