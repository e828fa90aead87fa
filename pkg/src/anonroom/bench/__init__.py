"""Load and conformance harness driving a running server over HTTP."""
