"""Time-based label refinement of event logs.

``timerefine`` splits an event label into several more specific labels when
the label's events occur at distinct times of day and the split makes the
log's control flow more predictable.

Modules:

    eventlog     event, trace and log records; CSV/XES input and output
    circstats    circular statistics and hypothesis tests
    mixture      von Mises mixtures, EM, BIC, cluster assignment
    controlflow  directly-follows statistics, entropy, information gain
    search       per-label candidates and the four refinement strategies
    synth        synthetic logs with planted structure
    cli          command-line front end
"""

__version__ = "0.1.0"
