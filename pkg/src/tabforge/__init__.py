"""tabforge: compile BPMN+DMN process models into an executable contract
package and run them on a deterministic simulated chain."""

__version__ = "0.1.0"
