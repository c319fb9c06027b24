"""Flops, params and activations of the ResNet and ResNeXt baselines at 224px."""

from netspaces.complexity import network_metrics, resnet_spec

MODELS = {
    "ResNet-50": dict(depths=(3, 4, 6, 3)),
    "ResNet-101": dict(depths=(3, 4, 23, 3)),
    "ResNet-152": dict(depths=(3, 8, 36, 3)),
    "ResNeXt-50 32x4d": dict(depths=(3, 4, 6, 3), groups=32, bottleneck_width=4),
    "ResNeXt-101 32x4d": dict(depths=(3, 4, 23, 3), groups=32, bottleneck_width=4),
}


def main():
    print(f"{'model':<20} {'flops(B)':>9} {'params(M)':>10} {'acts(M)':>8}")
    for name, kw in MODELS.items():
        m = network_metrics(resnet_spec(**kw))
        print(f"{name:<20} {m.flops / 1e9:>9.2f} {m.params / 1e6:>10.2f} {m.acts / 1e6:>8.2f}")


if __name__ == "__main__":
    main()
