# Layer chain of the convolutional LSTM autoencoder.
# Convolution stages are (in_channels, out_channels) per conv+BN+ReLU step;
# every such convolution has kernel size 3 with same-padding.

BLOCK_LENGTH = 64
KERNEL_SIZE = 3

ENCODER = (
    ("conv1", ((1, 32), (32, 32))),
    ("conv2", ((32, 64), (64, 64))),
)

# (name, in_features, hidden); features are the conv channel axis,
# timesteps are the 64 symbol positions
LSTMS = (
    ("lstm1", 64, 32),
    ("lstm2", 32, 16),
    ("lstm3", 16, 32),
    ("lstm4", 32, 64),
)

DECODER = (("conv3", ((64, 32), (32, 32))),)

# plain size-1 projection, no BN/ReLU
HEAD = ("conv4", 32, 1, 1)

# input/output channels per iq mode; stacked_iq feeds I and Q as two channels
IQ_CHANNELS = {"split_iq": 1, "stacked_iq": 2}
