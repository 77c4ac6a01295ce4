namespace mmcim {
}
