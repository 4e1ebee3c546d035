"""ECG motion-artifact denoising and inter-beat-interval estimation.

Submodules: ``ingest`` (WFDB parsing), ``sigproc`` (rates, power, windows),
``noisemix`` (SNR-controlled noise mixing), ``tiramisu`` (the dense-block
autoencoder), ``beats`` (R-peak detection and intervals), ``evalkit``
(agreement metrics and reports), ``synth`` (stand-in dataset), ``pipeline``
and ``cli`` (orchestration). Kept import-light so the CLI can pin BLAS
threads before numpy loads.
"""

__version__ = "0.1.0"
