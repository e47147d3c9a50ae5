import warnings

# The sandbox ships an old TBB; numba falls back to another threading layer
# and warns once. Cosmetic only.
warnings.filterwarnings("ignore", message=".*TBB threading layer requires TBB version.*")
