# Test suite for the patient matching pipeline
#
# Run tests with: pytest tests/
# Include the real-corpus checks with: pytest tests/ --with-real-corpus /path/to/n2c2-2018-track1
