"""Standards-compliance checking for assistive-technology product specifications.

The pipeline has three stages: terminology consistency checking against
standard vocabularies, hierarchical classification into a standards taxonomy
via retrieval plus a generative selection step, and trace-link generation with
preliminary compliance assessment against the standards that apply to the
assigned classes.
"""

__version__ = "0.1.0"
